#pragma once

#include <string>
#include <vector>

namespace varlab {

/// Word over the driver alphabet; letters are 0-based field indices.
struct Word {
  std::vector<int> letters;

  Word() = default;
  explicit Word(std::vector<int> ls) : letters(std::move(ls)) {}
  Word(std::initializer_list<int> ls) : letters(ls) {}

  int length() const { return static_cast<int>(letters.size()); }
  Word append(int letter) const {
    Word w = *this;
    w.letters.push_back(letter);
    return w;
  }
  bool operator==(const Word& o) const { return letters == o.letters; }
  bool operator<(const Word& o) const { return letters < o.letters; }

  /// 1-based display form, e.g. "(1,2,1)".
  std::string str() const;
};

/// All words of length 1..l over {0,..,d-1} in lexicographic order
/// (prefixes precede their extensions). Guarded against d^l > 1e6.
std::vector<Word> enumerate_words(int d, int l);

}  // namespace varlab
