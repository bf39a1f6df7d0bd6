#pragma once

// Newline-delimited JSON trace files.
//
//   header : {"device_id": ..., "rate_hz": ..., "unit": "g"|"mps2"}
//   sample : {"t": <s>, "ax": <f>, "ay": <f>, "az": <f>}
//   audio  : {"t_start": ..., "rate_hz": 8000, "samples": [...]}   (side-file)

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/signal.hpp"

namespace actmon {

using json = nlohmann::json;

inline json parse_json_line(const std::string& line, std::size_t line_no) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
}

inline double number_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_number())
        throw Error(ErrorKind::Parse, std::string("missing numeric field '") + key + "'");
    return it->get<double>();
}

inline json sample_to_json(const AccelSample& s) {
    return json{{"t", s.t}, {"ax", s.ax}, {"ay", s.ay}, {"az", s.az}};
}

inline AccelSample sample_from_json(const json& j) {
    return {number_field(j, "t"), number_field(j, "ax"), number_field(j, "ay"), number_field(j, "az")};
}

inline json header_to_json(const AccelStream& s) {
    return json{{"device_id", s.device_id}, {"rate_hz", s.rate_hz}, {"unit", to_string(s.unit)}};
}

inline void header_from_json(const json& j, AccelStream& s) {
    auto id = j.find("device_id");
    if (id == j.end() || !id->is_string()) throw Error(ErrorKind::Parse, "header lacks device_id");
    s.device_id = id->get<std::string>();
    s.rate_hz = number_field(j, "rate_hz");
    auto u = j.find("unit");
    if (u == j.end() || !u->is_string()) throw Error(ErrorKind::Parse, "header lacks unit");
    s.unit = parse_unit(u->get<std::string>());
}

inline json audio_to_json(const AudioFrame& f) {
    return json{{"t_start", f.t_start}, {"rate_hz", f.rate_hz}, {"samples", f.samples}};
}

inline AudioFrame audio_from_json(const json& j) {
    AudioFrame f;
    f.t_start = number_field(j, "t_start");
    f.rate_hz = number_field(j, "rate_hz");
    auto it = j.find("samples");
    if (it == j.end() || !it->is_array()) throw Error(ErrorKind::Parse, "audio frame lacks samples");
    f.samples = it->get<std::vector<double>>();
    return f;
}

inline AccelStream read_trace(std::istream& in) {
    AccelStream s;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = parse_json_line(line, line_no);
        if (!have_header) {
            header_from_json(j, s);
            have_header = true;
            continue;
        }
        s.samples.push_back(sample_from_json(j));
    }
    if (!have_header) throw Error(ErrorKind::Parse, "trace has no header record");
    validate_stream(s);
    return s;
}

inline AccelStream read_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return read_trace(in);
}

inline void write_trace(const AccelStream& s, std::ostream& out) {
    out << header_to_json(s).dump() << '\n';
    for (const auto& x : s.samples) out << sample_to_json(x).dump() << '\n';
}

inline void write_trace(const AccelStream& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    write_trace(s, out);
}

inline std::vector<AudioFrame> read_audio(std::istream& in) {
    std::vector<AudioFrame> frames;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        frames.push_back(audio_from_json(parse_json_line(line, line_no)));
        validate_audio(frames.back());
    }
    return frames;
}

inline std::vector<AudioFrame> read_audio(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return read_audio(in);
}

inline void write_audio(const std::vector<AudioFrame>& frames, std::ostream& out) {
    for (const auto& f : frames) out << audio_to_json(f).dump() << '\n';
}

inline void write_audio(const std::vector<AudioFrame>& frames, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    write_audio(frames, out);
}

}  // namespace actmon
