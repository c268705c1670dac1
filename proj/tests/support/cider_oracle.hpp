#pragma once

// Reference CIDEr written from the definition with dense vectors, for
// cross-checking the library implementation.

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

// Every contiguous n-gram of the sentence, joined with single spaces.
inline std::vector<std::string> grams(const std::string& s, int n) {
  const auto w = words(s);
  std::vector<std::string> out;
  for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) {
    std::string g = w[static_cast<std::size_t>(i)];
    for (int k = 1; k < n; ++k) g += " " + w[static_cast<std::size_t>(i + k)];
    out.push_back(g);
  }
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Per-item scores on the raw scale (x10).
inline std::vector<double> cider(const std::vector<std::string>& cands,
                                 const std::vector<std::vector<std::string>>& refs) {
  const double n_items = static_cast<double>(refs.size());
  std::vector<double> out(cands.size(), 0.0);
  for (int n = 1; n <= 4; ++n) {
    // Universe of n-grams across candidates and references.
    std::set<std::string> universe;
    for (const auto& c : cands) for (const auto& g : grams(c, n)) universe.insert(g);
    for (const auto& rs : refs) for (const auto& r : rs) for (const auto& g : grams(r, n)) universe.insert(g);
    const std::vector<std::string> index(universe.begin(), universe.end());

    std::vector<double> idf(index.size());
    for (std::size_t k = 0; k < index.size(); ++k) {
      int df = 0;
      for (const auto& rs : refs) {
        bool hit = false;
        for (const auto& r : rs) {
          for (const auto& g : grams(r, n)) hit = hit || g == index[k];
        }
        df += hit ? 1 : 0;
      }
      idf[k] = std::log(n_items) - std::log(std::max(1.0, static_cast<double>(df)));
    }
    auto vec = [&](const std::string& s) {
      std::vector<double> v(index.size(), 0.0);
      const auto gs = grams(s, n);
      for (std::size_t k = 0; k < index.size(); ++k) {
        int tf = 0;
        for (const auto& g : gs) tf += g == index[k] ? 1 : 0;
        v[k] = tf * idf[k];
      }
      return v;
    };
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const auto c = vec(cands[i]);
      double sum = 0.0;
      for (const auto& r : refs[i]) sum += cosine(c, vec(r));
      out[i] += 10.0 * sum / static_cast<double>(refs[i].size()) / 4.0;
    }
  }
  return out;
}

}  // namespace oracle
