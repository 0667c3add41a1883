// Shared fixtures for the test suite.
#pragma once

#include "askin/demo_assets.hpp"

namespace askin::testing {

// Full-resolution demo head; required wherever skinning weights are
// evaluated (the isotropic initializer is calibrated against this sampling).
inline const DemoHead& demo_head() {
  static const DemoHead head = make_demo_head();
  return head;
}

// Coarser head for geometry-only tests.
inline const DemoHead& small_head() {
  static const DemoHead head = make_demo_head(30, 28);
  return head;
}

}  // namespace askin::testing
