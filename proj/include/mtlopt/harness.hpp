// Copyright 2026 The mtlopt Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment harness: configs, trajectories, runs, sweeps and checks.

#pragma once

#include "mtlopt/harness/config.hpp"
#include "mtlopt/harness/runner.hpp"
#include "mtlopt/harness/trajectory.hpp"
