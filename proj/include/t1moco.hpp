// Copyright (c) 2026 t1moco contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Umbrella header for the whole library.

#include "t1moco/cli.hpp"
#include "t1moco/config.hpp"
#include "t1moco/evaluation.hpp"
#include "t1moco/grid.hpp"
#include "t1moco/io.hpp"
#include "t1moco/jacobi.hpp"
#include "t1moco/losses.hpp"
#include "t1moco/optimizer.hpp"
#include "t1moco/parallel.hpp"
#include "t1moco/phantom.hpp"
#include "t1moco/registration.hpp"
#include "t1moco/relaxometry.hpp"
#include "t1moco/types.hpp"
#include "t1moco/warp.hpp"
