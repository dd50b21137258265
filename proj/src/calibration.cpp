#include "gmskip/calibration.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "gmskip/error.hpp"

namespace gmskip {

using ojson = nlohmann::ordered_json;

Golds CalibrationSet::golds() const {
    switch (kind) {
        case GoldKind::label: {
            std::vector<Label> out;
            for (const Example& e : examples) out.push_back(e.label);
            return out;
        }
        case GoldKind::label_set: {
            std::vector<LabelSet> out;
            for (const Example& e : examples) out.push_back(e.labels);
            return out;
        }
        case GoldKind::references: {
            std::vector<ReferenceSet> out;
            for (const Example& e : examples) out.push_back(e.references);
            return out;
        }
    }
    return std::vector<Label>{};
}

namespace {

[[noreturn]] void schema(std::size_t line, const std::string& msg) {
    fail(ErrorCode::SchemaError, "line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> strings(const ojson& v, std::size_t line, const char* what) {
    if (!v.is_array()) schema(line, std::string(what) + " must be an array of strings");
    std::vector<std::string> out;
    for (const ojson& s : v) {
        if (!s.is_string()) schema(line, std::string(what) + " must be an array of strings");
        out.push_back(s.get<std::string>());
    }
    return out;
}

}  // namespace

CalibrationSet read_jsonl(std::istream& in) {
    CalibrationSet data;
    bool kind_known = false;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        ojson j;
        try {
            j = ojson::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorCode::ParseError,
                 "line " + std::to_string(line) + ", column " + std::to_string(e.byte) + ": " + e.what());
        }
        if (!j.is_object()) schema(line, "example must be an object");
        Example ex;
        int golds = 0;
        GoldKind kind = GoldKind::label;
        for (const auto& [k, v] : j.items()) {
            if (k == "id") {
                if (!v.is_string()) schema(line, "\"id\" must be a string");
                ex.id = v.get<std::string>();
            } else if (k == "tokens") {
                if (!v.is_array()) schema(line, "\"tokens\" must be an array of integers");
                for (const ojson& t : v) {
                    if (!t.is_number_integer()) schema(line, "\"tokens\" must be an array of integers");
                    ex.tokens.push_back(t.get<int>());
                }
            } else if (k == "label") {
                if (!v.is_string()) schema(line, "\"label\" must be a string");
                ex.label = v.get<std::string>();
                kind = GoldKind::label;
                ++golds;
            } else if (k == "labels") {
                ex.labels = strings(v, line, "\"labels\"");
                kind = GoldKind::label_set;
                ++golds;
            } else if (k == "references") {
                if (!v.is_array()) schema(line, "\"references\" must be an array of token arrays");
                for (const ojson& r : v) ex.references.push_back(Caption{strings(r, line, "each reference")});
                kind = GoldKind::references;
                ++golds;
            } else {
                schema(line, "unexpected field \"" + k + "\"");
            }
        }
        if (!j.contains("id")) schema(line, "missing field \"id\"");
        if (!j.contains("tokens")) schema(line, "missing field \"tokens\"");
        if (golds != 1) schema(line, "exactly one of \"label\", \"labels\", \"references\" is required");
        if (!kind_known) {
            data.kind = kind;
            kind_known = true;
        } else if (kind != data.kind) {
            schema(line, "gold field \"" + std::string(to_string(kind)) + "\" differs from earlier lines (\"" +
                             std::string(to_string(data.kind)) + "\")");
        }
        data.examples.push_back(std::move(ex));
    }
    return data;
}

CalibrationSet read_jsonl_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    return read_jsonl(in);
}

void write_jsonl(std::ostream& out, const CalibrationSet& data) {
    for (const Example& e : data.examples) {
        ojson j;
        j["id"] = e.id;
        j["tokens"] = e.tokens;
        switch (data.kind) {
            case GoldKind::label: j["label"] = e.label; break;
            case GoldKind::label_set: j["labels"] = e.labels; break;
            case GoldKind::references: {
                ojson refs = ojson::array();
                for (const Caption& c : e.references) refs.push_back(c.tokens);
                j["references"] = std::move(refs);
                break;
            }
        }
        out << j.dump() << '\n';
    }
}

}  // namespace gmskip
