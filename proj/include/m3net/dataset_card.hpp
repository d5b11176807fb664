#pragma once

#include <cstddef>
#include <string>

namespace m3net {

// Declared facts about a dataset, checked against the container on load.
struct DatasetCard {
    std::string name;
    std::size_t nodes = 0;
    std::size_t frames = 0;
    int interval_minutes = 5;
    int start_weekday = 0;  // 0 = Monday

    static DatasetCard parse_text(const std::string& text);
    static DatasetCard load(const std::string& path);
    std::string to_text() const;
};

}  // namespace m3net
