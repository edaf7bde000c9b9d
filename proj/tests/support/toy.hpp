#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "primelens/corpus.hpp"

namespace primelens::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(PRIMELENS_TEST_DATA) / name;
}

// The committed toy resources, loaded once.
struct Toy {
  Lexicon lexicon;
  AssociationNorms norms;
  EmbeddingTable embeddings;

  static const Toy& get() {
    static const Toy toy{load_lexicon(data_path("lexicon.txt")), load_norms(data_path("norms.csv")),
                         load_embeddings(data_path("embeddings.tsv"))};
    return toy;
  }
};

inline SlotWords slot_words(std::string dt1, std::string n1, std::string v, std::string dt2,
                            std::string n2, std::string p, std::string dt3, std::string n3) {
  return {{Slot::DT1, dt1}, {Slot::N1, n1}, {Slot::V, v},   {Slot::DT2, dt2},
          {Slot::N2, n2},   {Slot::P, p},   {Slot::DT3, dt3}, {Slot::N3, n3}};
}

// A fresh temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("primelens-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace primelens::testing
