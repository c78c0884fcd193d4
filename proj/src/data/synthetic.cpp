#include "cpi/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "cpi/errors.hpp"

namespace cpi::data {

namespace {

Column categorical(std::string name, std::vector<std::string> vocab) {
  Column c;
  c.name = std::move(name);
  c.kind = ColumnKind::categorical;
  c.vocabulary = std::move(vocab);
  return c;
}

Column numeric(std::string name) {
  Column c;
  c.name = std::move(name);
  c.kind = ColumnKind::numeric;
  return c;
}

template <class Rng>
int draw(Rng& rng, std::initializer_list<double> weights) {
  std::discrete_distribution<int> d(weights);
  return d(rng);
}

}  // namespace

Schema bank_schema() {
  Schema s;
  s.columns = {
      numeric("age"),
      categorical("job", {"admin.", "unknown", "unemployed", "management", "housemaid",
                          "entrepreneur", "student", "blue-collar", "self-employed", "retired",
                          "technician", "services"}),
      categorical("marital", {"married", "divorced", "single"}),
      categorical("education", {"unknown", "secondary", "primary", "tertiary"}),
      categorical("default", {"no", "yes"}),
      numeric("balance"),
      categorical("housing", {"no", "yes"}),
      categorical("loan", {"no", "yes"}),
      categorical("contact", {"unknown", "telephone", "cellular"}),
      numeric("day"),
      categorical("month",
                  {"jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"}),
      numeric("duration"),
      numeric("campaign"),
      numeric("pdays"),
      numeric("previous"),
      categorical("poutcome", {"unknown", "other", "failure", "success"}),
      categorical("y", {"no", "yes"}),
  };
  s.label_column = "y";
  s.property_column = "default";
  return s;
}

PropertySpec bank_default_property() {
  PropertySpec p;
  p.column = "default";
  p.positive_category = "yes";
  p.edges = {0.0, 0.05, 1.0};
  p.sampling_range = {0.0, 0.10};
  return p;
}

void SyntheticBankConfig::validate() const {
  if (rows < 1) throw ConfigError("synthetic rows must be >= 1");
  if (!(default_rate >= 0 && default_rate <= 1))
    throw ConfigError("synthetic default_rate must be in [0, 1]");
  if (!std::isfinite(default_effect) || !std::isfinite(base_logit))
    throw ConfigError("synthetic logits must be finite");
}

TabularDataset generate_bank_like(const SyntheticBankConfig& cfg) {
  cfg.validate();
  auto schema = std::make_shared<const Schema>(bank_schema());
  const auto& cols = schema->columns;
  RowMatrix cells(cfg.rows, Index(cols.size()));
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::bernoulli_distribution in_default(cfg.default_rate);

  for (Index r = 0; r < cfg.rows; ++r) {
    const int job = draw(rng, {11.4, 0.6, 2.9, 20.9, 2.7, 3.3, 2.1, 21.5, 3.5, 5.0, 16.8, 9.2});
    const double age = std::clamp(std::round(job == 9   ? 62 + 7 * normal(rng)
                                             : job == 6 ? 25 + 4 * normal(rng)
                                                        : 40 + 9.5 * normal(rng)),
                                  18.0, 95.0);
    const int marital = age < 30 ? draw(rng, {30, 3, 67}) : draw(rng, {64, 12, 24});
    const int education = job == 3 ? draw(rng, {3, 20, 5, 72}) : draw(rng, {4, 55, 17, 24});
    const bool dflt = in_default(rng);
    double balance = std::round(std::exp(6.6 + 1.3 * normal(rng)) - 250);
    if (dflt) balance = std::round(-300 + 400 * normal(rng));
    const int housing = unif(rng) < (age < 60 ? 0.58 : 0.2) ? 1 : 0;
    const int loan = unif(rng) < (dflt ? 0.45 : 0.15) ? 1 : 0;
    const int contact = draw(rng, {28.8, 6.4, 64.8});
    const double day = std::floor(1 + 31 * unif(rng));
    const int month = draw(rng, {3.1, 5.9, 1.1, 6.5, 30.4, 11.8, 15.3, 13.8, 1.3, 1.6, 8.8, 0.5});
    const double duration = std::round(std::min(4900.0, -258.0 * std::log(1 - unif(rng))));
    const double campaign = 1 + std::floor(std::log(1 - unif(rng)) / std::log(0.6));
    const bool contacted = unif(rng) < 0.18;
    const double pdays = contacted ? std::floor(1 + 400 * unif(rng)) : -1;
    const double previous = contacted ? 1 + std::floor(std::log(1 - unif(rng)) / std::log(0.5)) : 0;
    const int poutcome = contacted ? draw(rng, {22, 60, 18}) + 1 : 0;

    double logit = cfg.base_logit + 1.1 * (duration - 258) / 258 - 0.1 * (campaign - 2);
    logit += poutcome == 3 ? 2.2 : 0;
    logit += housing ? -0.6 : 0;
    logit += loan ? -0.4 : 0;
    logit += (job == 6 || job == 9) ? 0.6 : 0;
    logit += (month == 2 || month == 8 || month == 9 || month == 11) ? 1.2 : 0;
    logit += contact == 0 ? -0.8 : 0;
    logit += dflt ? cfg.default_effect : 0;
    const int y = unif(rng) < 1 / (1 + std::exp(-logit)) ? 1 : 0;

    cells.row(r) << age, job, marital, education, dflt ? 1 : 0, balance, housing, loan, contact,
        day, month, duration, campaign, pdays, previous, poutcome, y;
  }
  return TabularDataset(std::move(schema), std::move(cells));
}

}  // namespace cpi::data
