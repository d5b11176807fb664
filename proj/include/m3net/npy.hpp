#pragma once

// Minimal reader for .npy arrays and .npz archives, enough to convert the
// public traffic dumps into the native container format.

#include <cstddef>
#include <string>
#include <vector>

namespace m3net {

struct NpyArray {
    std::vector<std::size_t> shape;
    std::vector<double> data;  // values widened to double
};

NpyArray parse_npy(const std::vector<unsigned char>& bytes, const std::string& origin);

NpyArray load_npy(const std::string& path);

// Entry names inside a zip archive (uncompressed or deflate).
std::vector<std::string> npz_entries(const std::string& path);

// Loads one array. key may omit the ".npy" suffix; an empty key picks the
// sole entry, or the conventional "data" entry when present.
NpyArray load_npz_entry(const std::string& path, const std::string& key);

}  // namespace m3net
