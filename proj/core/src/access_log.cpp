#include "nsod/access_log.hpp"

#include <algorithm>
#include <filesystem>

namespace nsod {

AccessLog& AccessLog::instance() {
  static AccessLog log;
  return log;
}

std::string AccessLog::canonical(const std::string& path) {
  std::error_code ec;
  auto c = std::filesystem::weakly_canonical(path, ec);
  if (ec) return path;
  return c.string();
}

void AccessLog::register_sensitive(const std::string& path,
                                   const std::string& tag) {
  std::lock_guard lock(mu_);
  sensitive_.emplace_back(canonical(path), tag);
}

void AccessLog::record_read(const std::string& path) {
  const std::string cpath = canonical(path);
  std::lock_guard lock(mu_);
  for (const auto& [spath, tag] : sensitive_) {
    if (spath != cpath) continue;
    Entry e;
    e.path = cpath;
    e.tag = tag;
    if (!scopes_.empty()) {
      const auto& top = scopes_.back();
      e.scope = top.name;
      e.allowed = std::find(top.forbidden.begin(), top.forbidden.end(), tag) ==
                  top.forbidden.end();
    }
    entries_.push_back(std::move(e));
  }
}

std::vector<AccessLog::Entry> AccessLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::vector<AccessLog::Entry> AccessLog::violations() const {
  std::lock_guard lock(mu_);
  std::vector<Entry> out;
  for (const auto& e : entries_) {
    if (!e.allowed) out.push_back(e);
  }
  return out;
}

void AccessLog::reset() {
  std::lock_guard lock(mu_);
  sensitive_.clear();
  entries_.clear();
  scopes_.clear();
}

AccessLog::Scope::Scope(std::string name,
                        std::vector<std::string> forbidden_tags) {
  auto& log = AccessLog::instance();
  std::lock_guard lock(log.mu_);
  log.scopes_.push_back({std::move(name), std::move(forbidden_tags)});
}

AccessLog::Scope::~Scope() {
  auto& log = AccessLog::instance();
  std::lock_guard lock(log.mu_);
  if (!log.scopes_.empty()) log.scopes_.pop_back();
}

}  // namespace nsod
