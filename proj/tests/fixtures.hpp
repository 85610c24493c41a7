#pragma once

// Parameter sets shared by several test files.

#include "harqest/channel.hpp"
#include "harqest/harq_model.hpp"
#include "harqest/lti_estimation.hpp"

namespace fixtures {

inline harqest::LtiSystem reference_system() {
  harqest::Matrix a(2, 2);
  a << 2.4, 0.2, 0.2, 0.8;
  harqest::Matrix c(1, 2);
  c << 1, 1;
  return harqest::LtiSystem::make(a, c, harqest::Matrix::Identity(2, 2), harqest::Matrix::Identity(1, 1));
}

inline harqest::HarqModel reference_harq(harqest::HarqScheme s = harqest::HarqScheme::chase_combining,
                                     double snr_db = 10.0) {
  return harqest::HarqModel::from_db(s, snr_db, 100, 4.0);
}

inline harqest::MarkovChannel reference_markov_channel() {
  harqest::Matrix pi(2, 2);
  pi << 0.8, 0.2, 0.2, 0.8;
  return harqest::MarkovChannel::make({2.0, 1.0}, pi);
}

}  // namespace fixtures
