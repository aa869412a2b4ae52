#include "nsod/types.hpp"

#include <set>
#include <tuple>

namespace nsod {

bool box_less(const Box& a, const Box& b) {
  return std::tie(a.x1, a.y1, a.x2, a.y2) < std::tie(b.x1, b.y1, b.x2, b.y2);
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Support: return "support";
    case Split::Unlabeled: return "unlabeled";
    case Split::Test: return "test";
  }
  return "unlabeled";
}

Split split_from_name(const std::string& name) {
  if (name == "support") return Split::Support;
  if (name == "unlabeled") return Split::Unlabeled;
  if (name == "test") return Split::Test;
  throw ValidationError("unknown split: '" + name + "'");
}

int ClassCatalog::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (names[i] == name) return i;
  }
  return -1;
}

void ClassCatalog::validate() const {
  if (size() < 2)
    throw ValidationError("class catalog needs at least 2 classes");
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw ValidationError("empty class name in catalog");
    if (!seen.insert(n).second)
      throw ValidationError("duplicate class name: '" + n + "'");
  }
}

}  // namespace nsod
