#include "uth/reference.hpp"

namespace uth::reference {

std::vector<int> hamming_scan(const CodeDatabase& db, const HashCode& query) {
  std::vector<int> dist(db.size(), 0);
  for (std::size_t i = 0; i < db.size(); ++i) {
    const HashCode code = db.code(i);
    for (int b = 0; b < query.bit_width(); ++b) {
      if (code.bit(b) != query.bit(b)) ++dist[i];
    }
  }
  return dist;
}

}  // namespace uth::reference
