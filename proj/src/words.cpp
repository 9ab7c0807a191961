#include "varlab/words.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace varlab {

std::string Word::str() const {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < letters.size(); ++i) {
    if (i) out << ',';
    out << letters[i] + 1;
  }
  out << ')';
  return out.str();
}

namespace {

void extend(std::vector<Word>& out, const Word& prefix, int d, int l) {
  for (int c = 0; c < d; ++c) {
    Word w = prefix.append(c);
    out.push_back(w);
    if (w.length() < l) extend(out, w, d, l);
  }
}

}  // namespace

std::vector<Word> enumerate_words(int d, int l) {
  if (d < 1 || l < 1) throw std::domain_error("enumerate_words: need d,l >= 1");
  double total = 0.0;
  double power = 1.0;
  for (int k = 1; k <= l; ++k) {
    power *= d;
    total += power;
  }
  if (total > 1e6)
    throw std::domain_error("enumerate_words: d^l exceeds the 1e6 guard");

  std::vector<Word> out;
  out.reserve(static_cast<std::size_t>(total));
  extend(out, Word{}, d, l);
  return out;
}

}  // namespace varlab
