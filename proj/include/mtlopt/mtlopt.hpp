// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Umbrella header for the numerical core (no harness, no JSON dependency).

#pragma once

#include "mtlopt/aggregators.hpp"
#include "mtlopt/blocks.hpp"
#include "mtlopt/diagnostics.hpp"
#include "mtlopt/error.hpp"
#include "mtlopt/linalg.hpp"
#include "mtlopt/optimizers.hpp"
#include "mtlopt/problems.hpp"
