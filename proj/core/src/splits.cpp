#include <algorithm>
#include <random>
#include <string>

#include "fullface/dataset.hpp"
#include "fullface/error.hpp"

namespace fullface {

std::vector<Fold> make_splits(std::vector<int> persons, SplitScheme scheme, int k,
                              std::uint64_t seed) {
  std::sort(persons.begin(), persons.end());
  if (std::adjacent_find(persons.begin(), persons.end()) != persons.end()) {
    throw ValidationError("person ids must be unique");
  }
  if (persons.size() < 2) throw ValidationError("at least two persons are needed for cross-validation");

  std::vector<std::vector<int>> groups;
  if (scheme == SplitScheme::loocv) {
    for (int p : persons) groups.push_back({p});
  } else {
    if (k < 2) throw ValidationError("k-fold needs k >= 2");
    if (static_cast<std::size_t>(k) > persons.size()) {
      throw ValidationError("k-fold with k = " + std::to_string(k) + " but only " +
                            std::to_string(persons.size()) + " persons");
    }
    std::vector<int> shuffled = persons;
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    groups.resize(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < shuffled.size(); ++i) groups[i % k].push_back(shuffled[i]);
    for (auto& g : groups) std::sort(g.begin(), g.end());
  }

  std::vector<Fold> folds;
  for (const auto& g : groups) {
    Fold f;
    f.test_persons = g;
    std::set_difference(persons.begin(), persons.end(), g.begin(), g.end(),
                        std::back_inserter(f.train_persons));
    folds.push_back(std::move(f));
  }
  return folds;
}

}  // namespace fullface
