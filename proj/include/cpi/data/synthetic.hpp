#pragma once

#include <cstdint>

#include "cpi/data/dataset.hpp"
#include "cpi/data/property.hpp"

namespace cpi::data {

// Column layout of the UCI Bank Marketing file (bank-full.csv): 16 attributes
// plus the subscription label "y"; the confidential property column is
// "default". Encodes to 51 features.
Schema bank_schema();
// Binary task: share of customers with credit in default, split at 5%.
PropertySpec bank_default_property();

struct SyntheticBankConfig {
  Index rows = 45211;
  double default_rate = 0.06;
  // Log-odds added to the subscription label for customers in default. A
  // large value makes the property visible in trained parameters.
  double default_effect = 2.5;
  double base_logit = -2.6;
  std::uint64_t seed = 7;

  void validate() const;
};

// Bank-Marketing-like records with the same schema and roughly similar
// marginals, for environments without the UCI file.
TabularDataset generate_bank_like(const SyntheticBankConfig& cfg);

}  // namespace cpi::data
