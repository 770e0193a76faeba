#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "braintim/container.hpp"
#include "braintim/error.hpp"
#include "braintim/generator.hpp"

namespace braintim {

enum class SplitMode { CrossSubject, CrossSubjectScene };

inline std::string to_string(SplitMode m) {
  return m == SplitMode::CrossSubject ? "cross_subject" : "cross_subject_scene";
}

inline SplitMode parse_split_mode(const std::string& s) {
  if (s == "cross_subject") return SplitMode::CrossSubject;
  if (s == "cross_subject_scene") return SplitMode::CrossSubjectScene;
  throw ConfigError("unknown split mode '" + s + "'");
}

struct SplitSpec {
  SplitMode mode = SplitMode::CrossSubject;
  std::vector<std::uint32_t> train_subjects;
  std::vector<std::uint32_t> val_subjects;
  std::vector<std::uint32_t> test_subjects;
  std::vector<std::uint32_t> test_scenes;
};

// Largest-remainder apportionment of `total` items by `weights`, with every
// part receiving at least one item. Remainder ties go to the earlier part.
inline std::vector<int> proportional_counts(int total, const std::vector<int>& weights) {
  const int parts = static_cast<int>(weights.size());
  if (total < parts) throw ConfigError("not enough items to give each split at least one");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> counts(weights.size());
  std::vector<std::pair<double, int>> rem;
  int assigned = 0;
  for (int i = 0; i < parts; ++i) {
    const double exact = total * weights[static_cast<std::size_t>(i)] / wsum;
    counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(exact));
    assigned += counts[static_cast<std::size_t>(i)];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (int k = 0; k < total - assigned; ++k) ++counts[static_cast<std::size_t>(rem[static_cast<std::size_t>(k)].second)];
  for (auto& c : counts) {
    if (c == 0) {
      auto largest = std::max_element(counts.begin(), counts.end());
      --*largest;
      c = 1;
    }
  }
  return counts;
}

struct SessionKey {
  std::uint32_t subject_id = 0;
  std::uint32_t scene_id = 0;
};

// Cross-subject: subjects (sorted by id) are apportioned 22:6:6 across
// train/validation/test. Cross-subject-scene: every session recorded in a
// held-out scene is test data, those sessions' subjects are excluded from
// training, and the remaining subjects are apportioned 28:6.
inline SplitSpec make_splits(const std::vector<SessionKey>& sessions, SplitMode mode,
                             std::vector<std::uint32_t> held_out_scenes = {}) {
  std::set<std::uint32_t> subjects, scenes;
  for (const auto& s : sessions) {
    subjects.insert(s.subject_id);
    scenes.insert(s.scene_id);
  }
  SplitSpec split;
  split.mode = mode;
  if (mode == SplitMode::CrossSubject) {
    if (subjects.size() < 5) throw ConfigError("cross_subject split needs at least 5 subjects");
    const auto counts = proportional_counts(static_cast<int>(subjects.size()), {22, 6, 6});
    auto it = subjects.begin();
    for (int i = 0; i < counts[0]; ++i) split.train_subjects.push_back(*it++);
    for (int i = 0; i < counts[1]; ++i) split.val_subjects.push_back(*it++);
    for (int i = 0; i < counts[2]; ++i) split.test_subjects.push_back(*it++);
    return split;
  }
  if (scenes.size() < 2) throw ConfigError("cross_subject_scene split needs at least 2 scenes");
  if (held_out_scenes.empty()) held_out_scenes.push_back(*scenes.rbegin());
  std::set<std::uint32_t> held(held_out_scenes.begin(), held_out_scenes.end());
  for (auto sc : held) {
    if (!scenes.count(sc)) throw ConfigError("held-out scene " + std::to_string(sc) + " has no sessions");
  }
  if (held.size() >= scenes.size()) throw ConfigError("at least one scene must remain for training");
  std::set<std::uint32_t> test_subjects;
  for (const auto& s : sessions) {
    if (held.count(s.scene_id)) test_subjects.insert(s.subject_id);
  }
  std::vector<std::uint32_t> rest;
  for (auto s : subjects) {
    if (!test_subjects.count(s)) rest.push_back(s);
  }
  if (rest.size() < 2) throw ConfigError("cross_subject_scene split needs at least 2 training subjects");
  const auto counts = proportional_counts(static_cast<int>(rest.size()), {28, 6});
  split.train_subjects.assign(rest.begin(), rest.begin() + counts[0]);
  split.val_subjects.assign(rest.begin() + counts[0], rest.end());
  split.test_subjects.assign(test_subjects.begin(), test_subjects.end());
  split.test_scenes.assign(held.begin(), held.end());
  return split;
}

// Session indices per partition.
struct Partition {
  std::vector<std::size_t> train, val, test;
};

inline Partition partition_sessions(const std::vector<SessionKey>& sessions, const SplitSpec& split) {
  auto contains = [](const std::vector<std::uint32_t>& v, std::uint32_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  Partition p;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    const bool held = contains(split.test_scenes, s.scene_id);
    if (split.mode == SplitMode::CrossSubjectScene) {
      if (held) {
        p.test.push_back(i);
        continue;
      }
      if (contains(split.test_subjects, s.subject_id)) continue;
    }
    if (contains(split.train_subjects, s.subject_id)) {
      p.train.push_back(i);
    } else if (contains(split.val_subjects, s.subject_id)) {
      p.val.push_back(i);
    } else if (contains(split.test_subjects, s.subject_id)) {
      p.test.push_back(i);
    }
  }
  return p;
}

// Throws ConfigError if the split leaks subjects or held-out scenes.
inline void check_split(const std::vector<SessionKey>& sessions, const SplitSpec& split) {
  std::set<std::uint32_t> seen;
  for (const auto* list : {&split.train_subjects, &split.val_subjects, &split.test_subjects}) {
    for (auto s : *list) {
      if (!seen.insert(s).second) throw ConfigError("subject " + std::to_string(s) + " appears in two splits");
    }
  }
  if (split.mode == SplitMode::CrossSubjectScene) {
    const auto part = partition_sessions(sessions, split);
    for (auto i : part.train) {
      for (auto sc : split.test_scenes) {
        if (sessions[i].scene_id == sc) throw ConfigError("training session from a held-out scene");
      }
    }
    for (auto i : part.val) {
      for (auto sc : split.test_scenes) {
        if (sessions[i].scene_id == sc) throw ConfigError("validation session from a held-out scene");
      }
    }
  }
}

template <class Range>
std::vector<SessionKey> session_keys(const Range& entries) {
  std::vector<SessionKey> keys;
  for (const auto& e : entries) keys.push_back({e.session.subject_id, e.session.scene_id});
  return keys;
}

// ---------------------------------------------------------------------------
// Dataset directory: subject{S}_scene{C}_sess{K}.egbr files plus manifest.csv.

inline std::string session_file_name(std::uint32_t subject, std::uint32_t scene, int index) {
  return "subject" + std::to_string(subject) + "_scene" + std::to_string(scene) + "_sess" + std::to_string(index) +
         ".egbr";
}

inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kManifestHeader =
    "file,subject_id,scene_id,session_index,duration_ms,video_rate,signal_rate,channels,height,width,labels";

inline std::string rate_string(Rational r) { return std::to_string(r.num) + "/" + std::to_string(r.den); }

inline void write_dataset(const std::filesystem::path& dir, const std::vector<SessionEntry>& entries) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / kManifestName, std::ios::trunc);
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  manifest << kManifestHeader << "\n";
  for (const auto& e : entries) {
    const auto& s = e.session;
    const auto name = session_file_name(s.subject_id, s.scene_id, e.session_index);
    write_session(dir / name, s);
    manifest << name << "," << s.subject_id << "," << s.scene_id << "," << e.session_index << ","
             << s.timeline.duration_ms << "," << rate_string(s.timeline.video_rate) << ","
             << rate_string(s.timeline.signal_rate) << "," << s.channels << "," << s.height << "," << s.width << ","
             << s.labels.size() << "\n";
  }
}

struct ManifestRow {
  std::string file;
  int session_index = 0;
};

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw DataError("missing " + (dir / kManifestName).string());
  std::string line;
  std::getline(in, line);
  if (line != kManifestHeader) throw ParseError("unexpected manifest header in " + dir.string());
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 11) throw ParseError("malformed manifest row: " + line);
    rows.push_back({fields[0], std::stoi(fields[3])});
  }
  return rows;
}

inline std::vector<SessionEntry> read_dataset(const std::filesystem::path& dir) {
  std::vector<SessionEntry> out;
  for (const auto& row : read_manifest(dir)) out.push_back({row.session_index, read_session(dir / row.file)});
  return out;
}

}  // namespace braintim
