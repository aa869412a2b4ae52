#pragma once

#include <mutex>
#include <string>
#include <vector>

namespace nsod {

/// Process-wide audit trail for sensitive file reads.
///
/// The pipeline's core contract is that training never touches ground
/// truth. Rather than trusting call-site discipline, every file read in
/// the io layer reports here. Stages register themselves with the set of
/// tags they must not read ("gt" for all training stages, additionally
/// "proposals" for the image-level baselines); reads of a registered
/// sensitive path inside such a stage are recorded as violations.
class AccessLog {
 public:
  struct Entry {
    std::string scope;
    std::string path;
    std::string tag;
    bool allowed = true;
  };

  static AccessLog& instance();

  /// Marks a path as sensitive under the given tag (e.g. "gt").
  void register_sensitive(const std::string& path, const std::string& tag);

  /// Reports a file read. Called by every reader in the io layer.
  void record_read(const std::string& path);

  std::vector<Entry> entries() const;
  std::vector<Entry> violations() const;

  /// Drops all registrations, entries, and scopes. Test and run setup only.
  void reset();

  /// RAII stage marker. While alive, reads of paths whose tag is in
  /// `forbidden_tags` count as violations.
  class Scope {
   public:
    Scope(std::string name, std::vector<std::string> forbidden_tags);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
  };

 private:
  AccessLog() = default;

  struct ScopeFrame {
    std::string name;
    std::vector<std::string> forbidden;
  };

  static std::string canonical(const std::string& path);

  mutable std::mutex mu_;
  std::vector<std::pair<std::string, std::string>> sensitive_;  // path, tag
  std::vector<Entry> entries_;
  std::vector<ScopeFrame> scopes_;
};

/// Tags understood by the standard pipeline.
inline constexpr const char* kGroundTruthTag = "gt";
inline constexpr const char* kProposalsTag = "proposals";

}  // namespace nsod
