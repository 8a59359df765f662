#pragma once

// Wire objects of the mock-server protocol (JSON over HTTP). The schemas
// here are the contract documented in docs/protocol.md; both the server and
// the client build on these converters.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "erd/corpus.hpp"
#include "erd/errors.hpp"

namespace erd::protocol {

using json = nlohmann::json;

struct RoundMessageItem {
    std::string nick;
    std::string message;
    std::string date;
    std::string platform;
};

struct RoundMessage {
    int round = 1;
    std::vector<RoundMessageItem> messages;  // one per active user, sorted by nick
    std::optional<int> remaining_rounds_hint;
    bool done = false;  // terminal marker: no rounds left to serve
};

struct RoundResponse {
    int round = 1;
    std::map<std::string, int> predictions;    // nick -> {0,1}, covers served nicks
    std::map<std::string, double> scores;      // nick -> [0,1]; optional but full if present
};

inline json to_json(const RoundMessage& m) {
    json messages = json::array();
    for (const auto& item : m.messages) {
        messages.push_back({{"nick", item.nick},
                            {"message", item.message},
                            {"date", item.date},
                            {"platform", item.platform}});
    }
    json doc{{"round", m.round}, {"messages", std::move(messages)}, {"done", m.done}};
    if (m.remaining_rounds_hint) doc["remaining_rounds_hint"] = *m.remaining_rounds_hint;
    return doc;
}

inline RoundMessage round_message_from_json(const json& doc) {
    RoundMessage m;
    try {
        m.round = doc.at("round").get<int>();
        m.done = doc.value("done", false);
        if (doc.contains("remaining_rounds_hint")) {
            m.remaining_rounds_hint = doc["remaining_rounds_hint"].get<int>();
        }
        for (const auto& item : doc.at("messages")) {
            m.messages.push_back({item.at("nick").get<std::string>(),
                                  item.at("message").get<std::string>(),
                                  item.at("date").get<std::string>(),
                                  item.at("platform").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid round message: ") + e.what());
    }
    return m;
}

inline json to_json(const RoundResponse& r) {
    return json{{"round", r.round}, {"predictions", r.predictions}, {"scores", r.scores}};
}

inline RoundResponse round_response_from_json(const json& doc) {
    RoundResponse r;
    try {
        r.round = doc.at("round").get<int>();
        for (const auto& [nick, v] : doc.at("predictions").items()) {
            r.predictions[nick] = v.get<int>();
        }
        if (doc.contains("scores")) {
            for (const auto& [nick, v] : doc["scores"].items()) {
                r.scores[nick] = v.get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid round response: ") + e.what());
    }
    return r;
}

}  // namespace erd::protocol
