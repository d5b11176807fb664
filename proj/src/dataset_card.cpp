#include "m3net/dataset_card.hpp"

#include <fstream>
#include <sstream>

#include "m3net/errors.hpp"
#include "m3net/kvtext.hpp"

namespace m3net {

DatasetCard DatasetCard::parse_text(const std::string& text) {
    KvText kv = KvText::parse(text);
    DatasetCard card;
    card.name = kv.get("name");
    card.nodes = static_cast<std::size_t>(kv.get_int("nodes"));
    card.frames = static_cast<std::size_t>(kv.get_int("frames"));
    card.interval_minutes = static_cast<int>(kv.get_int("interval_minutes"));
    card.start_weekday = static_cast<int>(kv.get_int("start_weekday"));
    if (card.nodes == 0 || card.frames == 0)
        throw ConfigError("dataset card: nodes and frames must be positive");
    if (card.interval_minutes <= 0 || 1440 % card.interval_minutes != 0)
        throw ConfigError("dataset card: interval_minutes must divide 1440, got " +
                          std::to_string(card.interval_minutes));
    if (card.start_weekday < 0 || card.start_weekday > 6)
        throw ConfigError("dataset card: start_weekday must be in [0, 6]");
    return card;
}

DatasetCard DatasetCard::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("dataset card not found: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

std::string DatasetCard::to_text() const {
    KvText kv;
    kv.set("name", name);
    kv.set("nodes", std::to_string(nodes));
    kv.set("frames", std::to_string(frames));
    kv.set("interval_minutes", std::to_string(interval_minutes));
    kv.set("start_weekday", std::to_string(start_weekday));
    return kv.to_text();
}

}  // namespace m3net
