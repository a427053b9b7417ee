// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "panoavoid/checkpoint.hpp"
#include "panoavoid/dynamics.hpp"
#include "panoavoid/evaluation.hpp"
#include "panoavoid/geometry.hpp"
#include "panoavoid/objective.hpp"
#include "panoavoid/ops.hpp"
#include "panoavoid/optim.hpp"
#include "panoavoid/policy.hpp"
#include "panoavoid/random.hpp"
#include "panoavoid/render.hpp"
#include "panoavoid/tensor.hpp"
#include "panoavoid/training.hpp"
#include "panoavoid/world.hpp"
