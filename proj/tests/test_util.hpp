// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hlm/verify/grad_check.hpp"

namespace hlm::test {

using verify::grad_check;
using verify::LossBuilder;
using verify::randn;
using verify::uniform;
using verify::weighted_sum;

} // namespace hlm::test
