#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cscct/exemplar_memory.hpp"
#include "cscct/rng.hpp"

using namespace cscct;

namespace {

using Candidates = std::vector<std::pair<std::int64_t, std::vector<double>>>;

std::vector<double> normalize(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) return v;
  for (double& x : v) x /= n;
  return v;
}

// Independent re-statement of the greedy rule: at every step, re-evaluate
// every unpicked candidate by forming the would-be selection mean from
// scratch and comparing it against the class mean.
std::vector<std::int64_t> herding_oracle(const Candidates& input, int budget) {
  const std::size_t n = input.size();
  const std::size_t d = input.front().second.size();
  std::vector<std::vector<double>> feats;
  feats.reserve(n);
  for (const auto& [id, f] : input) feats.push_back(normalize(f));

  std::vector<double> mu(d, 0.0);
  for (const auto& f : feats) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += f[j];
  }
  for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(n);

  std::vector<std::size_t> chosen;
  std::vector<std::int64_t> out;
  const std::size_t take = std::min<std::size_t>(budget, n);
  while (out.size() < take) {
    double best_dist = 0.0;
    std::size_t best = n;
    std::int64_t best_id = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      std::vector<double> mean(d, 0.0);
      for (std::size_t c : chosen) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += feats[c][j];
      }
      for (std::size_t j = 0; j < d; ++j) {
        mean[j] = (mean[j] + feats[i][j]) / static_cast<double>(chosen.size() + 1);
      }
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dist += (mu[j] - mean[j]) * (mu[j] - mean[j]);
      }
      if (best == n || dist < best_dist || (dist == best_dist && input[i].first < best_id)) {
        best = i;
        best_dist = dist;
        best_id = input[i].first;
      }
    }
    chosen.push_back(best);
    out.push_back(input[best].first);
  }
  return out;
}

Candidates random_candidates(RandomStream& rng, std::size_t n, std::size_t d,
                             bool force_ties) {
  Candidates out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> f(d);
    for (auto& x : f) x = rng.uniform(-2, 2);
    out.emplace_back(static_cast<std::int64_t>(i * 3 + 1), std::move(f));
  }
  if (force_ties && n >= 2) {
    // duplicate a feature vector so the id rule must decide
    out[n - 1].second = out[0].second;
  }
  return out;
}

}  // namespace

TEST_CASE("herding: 1-d degenerate case picks the tied +1 with smallest id") {
  Candidates input = {{10, {-1.0}}, {4, {1.0}}, {2, {1.0}}};
  const auto picked = herding_select(input, 1);
  REQUIRE(picked.size() == 1);
  CHECK(picked[0] == 2);
}

TEST_CASE("herding: budget covering everything returns all ids in herding order") {
  RandomStream rng(8);
  const auto input = random_candidates(rng, 5, 3, false);
  const auto picked = herding_select(input, 100);
  CHECK(picked.size() == 5);
  std::vector<std::int64_t> sorted = picked;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::int64_t> expected;
  for (const auto& [id, f] : input) expected.push_back(id);
  std::sort(expected.begin(), expected.end());
  CHECK(sorted == expected);
}

TEST_CASE("herding: prefix property across all budgets") {
  RandomStream rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(7);
    const auto input = random_candidates(rng, n, 2 + rng.uniform_index(3), trial % 3 == 0);
    const auto full = herding_select(input, static_cast<int>(n));
    for (std::size_t budget = 1; budget < n; ++budget) {
      const auto partial = herding_select(input, static_cast<int>(budget));
      REQUIRE(partial.size() == budget);
      for (std::size_t i = 0; i < budget; ++i) CHECK(partial[i] == full[i]);
    }
  }
}

TEST_CASE("herding equals the exhaustive greedy oracle (500 seeded trials)") {
  RandomStream rng(123);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(8);
    const std::size_t d = 1 + rng.uniform_index(4);
    const auto input = random_candidates(rng, n, d, trial % 4 == 0);
    const int budget = 1 + static_cast<int>(rng.uniform_index(n));
    CHECK(herding_select(input, budget) == herding_oracle(input, budget));
  }
}

TEST_CASE("herding: selection is invariant to input order") {
  RandomStream rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(6);
    auto input = random_candidates(rng, n, 3, trial % 2 == 0);
    const auto baseline = herding_select(input, static_cast<int>(n));
    auto shuffled = input;
    rng.shuffle(shuffled);
    CHECK(herding_select(shuffled, static_cast<int>(n)) == baseline);
  }
}

TEST_CASE("herding rejects empty input and bad budget") {
  CHECK_THROWS_AS(herding_select({}, 1), std::invalid_argument);
  Candidates one = {{0, {1.0}}};
  CHECK_THROWS_AS(herding_select(one, 0), std::invalid_argument);
}

namespace {

Task make_task(int index, const std::vector<int>& classes, int per_class,
               RandomStream& rng) {
  Task task;
  task.index = index;
  task.class_set = classes;
  std::int64_t id = index * 10000;
  for (int cls : classes) {
    for (int i = 0; i < per_class; ++i) {
      LabeledExample ex;
      ex.id = id++;
      ex.label = cls;
      ex.features = {rng.uniform(-1, 1), rng.uniform(-1, 1), static_cast<double>(cls)};
      task.train.push_back(std::move(ex));
    }
  }
  return task;
}

const FeatureFn identity_features = [](const LabeledExample& ex) { return ex.features; };

}  // namespace

TEST_CASE("update_after_task fills budget-sized lists per class") {
  RandomStream rng(1);
  ExemplarMemory memory;
  memory.per_class_budget = 20;
  const Task task = make_task(1, {0, 1}, 500, rng);
  update_after_task(memory, task, identity_features);
  REQUIRE(memory.store.size() == 2);
  CHECK(memory.store.at(0).size() == 20);
  CHECK(memory.store.at(1).size() == 20);
  CHECK(memory.total_size() == 40);
}

TEST_CASE("update_after_task stores the whole class when budget exceeds it") {
  RandomStream rng(2);
  ExemplarMemory memory;
  memory.per_class_budget = 50;
  const Task task = make_task(1, {3}, 7, rng);
  update_after_task(memory, task, identity_features);
  CHECK(memory.store.at(3).size() == 7);
}

TEST_CASE("update_after_task is deterministic and rejects class collisions") {
  RandomStream rng(3);
  const Task task = make_task(1, {0, 1}, 30, rng);

  ExemplarMemory a, b;
  a.per_class_budget = b.per_class_budget = 5;
  update_after_task(a, task, identity_features);
  update_after_task(b, task, identity_features);
  CHECK(a.ids() == b.ids());

  CHECK_THROWS_AS(update_after_task(a, task, identity_features), std::invalid_argument);

  // existing classes untouched by later tasks
  RandomStream rng2(4);
  const Task task2 = make_task(2, {5}, 30, rng2);
  const auto before = a.ids();
  update_after_task(a, task2, identity_features);
  for (const auto& [cls, ids] : before) {
    CHECK(a.ids().at(cls) == ids);
  }
}

TEST_CASE("memory size is budget times classes seen") {
  RandomStream rng(9);
  ExemplarMemory memory;
  memory.per_class_budget = 4;
  update_after_task(memory, make_task(1, {0, 1, 2}, 25, rng), identity_features);
  update_after_task(memory, make_task(2, {3, 4}, 25, rng), identity_features);
  CHECK(memory.total_size() == 4 * 5);
}

TEST_CASE("class_means: single exemplar equals its normalized feature") {
  ExemplarMemory memory;
  memory.per_class_budget = 1;
  LabeledExample ex;
  ex.id = 0;
  ex.label = 2;
  ex.features = {3.0, 4.0};
  memory.store[2] = {ex};
  const auto means = class_means(memory, identity_features);
  REQUIRE(means.count(2) == 1);
  CHECK(means.at(2)[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(means.at(2)[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("class_means: antipodal exemplars are a degenerate error") {
  ExemplarMemory memory;
  memory.per_class_budget = 2;
  LabeledExample a, b;
  a.id = 0;
  b.id = 1;
  a.label = b.label = 0;
  a.features = {1.0, 0.0};
  b.features = {-1.0, 0.0};
  memory.store[0] = {a, b};
  CHECK_THROWS_AS(class_means(memory, identity_features), std::domain_error);
}

TEST_CASE("class_means: three hand-set exemplars match direct arithmetic") {
  ExemplarMemory memory;
  memory.per_class_budget = 3;
  LabeledExample e1, e2, e3;
  e1.id = 0, e2.id = 1, e3.id = 2;
  e1.label = e2.label = e3.label = 1;
  e1.features = {1.0, 0.0};
  e2.features = {0.0, 1.0};
  e3.features = {1.0, 1.0};
  memory.store[1] = {e1, e2, e3};
  const auto means = class_means(memory, identity_features);

  const double s = 1.0 / std::sqrt(2.0);
  const double mx = (1.0 + 0.0 + s) / 3.0;
  const double my = (0.0 + 1.0 + s) / 3.0;
  const double norm = std::sqrt(mx * mx + my * my);
  CHECK(std::abs(means.at(1)[0] - mx / norm) < 1e-12);
  CHECK(std::abs(means.at(1)[1] - my / norm) < 1e-12);

  CHECK_THROWS_AS(class_means(ExemplarMemory{}, identity_features), std::invalid_argument);
}
