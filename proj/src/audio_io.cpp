#include "sedpipe/audio_io.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sedpipe/errors.h"

namespace sed {
namespace {

// Tolerance for time -> frame conversion so that boundaries which are exact in
// decimal (0.06 / 0.02) are not pushed across a frame by binary rounding.
constexpr double kFrameEps = 1e-9;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::istringstream ss(s);
  ss.imbue(std::locale::classic());
  ss >> out;
  return !ss.fail() && ss.eof() && std::isfinite(out);
}

std::string format_seconds(double v) {
  std::ostringstream ss;
  ss.imbue(std::locale::classic());
  ss.precision(6);
  ss << std::fixed << v;
  return ss.str();
}

}  // namespace

void AudioClip::validate() const {
  if (sample_rate <= 0) throw FormatError("sample rate must be positive");
  if (channels.size() != 1 && channels.size() != 2) {
    throw FormatError("clip must have 1 or 2 channels, got " + std::to_string(channels.size()));
  }
  for (const auto& ch : channels) {
    if (ch.size() != channels[0].size()) throw FormatError("channels differ in length");
    for (double v : ch) {
      if (!std::isfinite(v)) throw FormatError("non-finite sample");
    }
  }
}

EventRoll::EventRoll(std::size_t n_frames, std::vector<std::string> class_names, double hop_seconds)
    : n_frames_(n_frames),
      class_names_(std::move(class_names)),
      hop_seconds_(hop_seconds),
      activity_(n_frames_ * class_names_.size(), 0) {}

std::string to_string(SplitRole role) {
  switch (role) {
    case SplitRole::train:
      return "train";
    case SplitRole::validation:
      return "validation";
    case SplitRole::test:
      return "test";
  }
  return "train";
}

SplitRole parse_split_role(const std::string& s) {
  if (s == "train") return SplitRole::train;
  if (s == "validation") return SplitRole::validation;
  if (s == "test") return SplitRole::test;
  throw ManifestError("unknown split role '" + s + "'");
}

std::vector<int> DatasetManifest::folds() const {
  std::set<int> f;
  for (const auto& e : entries) f.insert(e.fold);
  return {f.begin(), f.end()};
}

std::vector<ManifestEntry> DatasetManifest::split(int fold, SplitRole role) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.fold == fold && e.role == role) out.push_back(e);
  }
  return out;
}

std::filesystem::path DatasetManifest::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

void DatasetManifest::validate() const {
  std::set<std::pair<int, std::string>> seen;
  int max_fold = 0;
  for (const auto& e : entries) {
    if (e.fold < 1) throw ManifestError("fold ids start at 1, got " + std::to_string(e.fold));
    max_fold = std::max(max_fold, e.fold);
    if (!seen.insert({e.fold, e.audio_path}).second) {
      throw ManifestError("clip " + e.audio_path + " listed twice in fold " + std::to_string(e.fold));
    }
  }
  const auto present = folds();
  if (static_cast<int>(present.size()) != max_fold) {
    throw ManifestError("fold ids do not cover 1.." + std::to_string(max_fold));
  }
}

AudioClip to_mono(const AudioClip& clip) {
  if (clip.n_channels() == 1) return clip;
  if (clip.n_channels() != 2) {
    throw ChannelError("to_mono expects 1 or 2 channels, got " + std::to_string(clip.n_channels()));
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.channels.assign(1, std::vector<double>(clip.n_samples()));
  const auto& l = clip.channels[0];
  const auto& r = clip.channels[1];
  for (std::size_t i = 0; i < l.size(); ++i) out.channels[0][i] = 0.5 * (l[i] + r[i]);
  return out;
}

EventList parse_annotations(const std::string& text, const std::vector<std::string>& class_names) {
  const std::set<std::string> vocab(class_names.begin(), class_names.end());
  EventList events;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cols = split_tabs(line);
    Event ev;
    if (cols.size() != 3 || !parse_double(cols[0], ev.onset) || !parse_double(cols[1], ev.offset)) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": expected onset<TAB>offset<TAB>label");
    }
    ev.label = cols[2];
    if (!vocab.count(ev.label)) {
      throw VocabularyError("annotation line " + std::to_string(line_no) + ": unknown label '" +
                            ev.label + "'");
    }
    if (ev.onset < 0.0 || ev.offset <= ev.onset) {
      throw RangeError("annotation line " + std::to_string(line_no) + ": offset must exceed onset >= 0");
    }
    events.push_back(std::move(ev));
  }
  return events;
}

EventList read_annotations(const std::filesystem::path& path,
                           const std::vector<std::string>& class_names) {
  try {
    return parse_annotations(read_text(path), class_names);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_annotations(const std::filesystem::path& path, const EventList& events) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : events) {
    out << format_seconds(e.onset) << '\t' << format_seconds(e.offset) << '\t' << e.label << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

EventRoll events_to_roll(const EventList& events, std::size_t n_frames, double hop_seconds,
                         const std::vector<std::string>& class_names) {
  if (n_frames == 0) throw RangeError("events_to_roll needs n_frames > 0");
  if (!(hop_seconds > 0.0)) throw RangeError("events_to_roll needs hop_seconds > 0");
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < class_names.size(); ++c) index[class_names[c]] = c;

  EventRoll roll(n_frames, class_names, hop_seconds);
  for (const auto& e : events) {
    const auto it = index.find(e.label);
    if (it == index.end()) throw VocabularyError("unknown label '" + e.label + "'");
    if (e.offset <= e.onset) throw RangeError("event offset must exceed onset");
    const double first_f = std::floor(e.onset / hop_seconds + kFrameEps);
    const double end_f = std::ceil(e.offset / hop_seconds - kFrameEps);
    if (first_f >= static_cast<double>(n_frames) || end_f <= 0.0) continue;
    const auto first = static_cast<std::size_t>(std::max(0.0, first_f));
    const auto end = std::min(n_frames, static_cast<std::size_t>(end_f));
    for (std::size_t f = first; f < end; ++f) roll.set(f, it->second, true);
  }
  return roll;
}

EventList roll_to_events(const EventRoll& roll) {
  EventList out;
  const double hop = roll.hop_seconds();
  for (std::size_t c = 0; c < roll.n_classes(); ++c) {
    std::size_t f = 0;
    while (f < roll.n_frames()) {
      if (!roll.at(f, c)) {
        ++f;
        continue;
      }
      const std::size_t start = f;
      while (f < roll.n_frames() && roll.at(f, c)) ++f;
      out.push_back({start * hop, f * hop, roll.class_names()[c]});
    }
  }
  return out;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::istringstream in(read_text(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 4) {
      throw ManifestError(path.string() + " line " + std::to_string(line_no) +
                          ": expected audio<TAB>annotation<TAB>fold<TAB>role");
    }
    ManifestEntry e;
    e.audio_path = cols[0];
    e.annotation_path = cols[1];
    try {
      std::size_t used = 0;
      e.fold = std::stoi(cols[2], &used);
      if (used != cols[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ManifestError(path.string() + " line " + std::to_string(line_no) + ": bad fold id");
    }
    e.role = parse_split_role(cols[3]);
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : manifest.entries) {
    out << e.audio_path << '\t' << e.annotation_path << '\t' << e.fold << '\t' << to_string(e.role)
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace sed
