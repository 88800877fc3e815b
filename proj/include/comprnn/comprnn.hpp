// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "comprnn/checkpoint.hpp"
#include "comprnn/corpus.hpp"
#include "comprnn/gradcheck.hpp"
#include "comprnn/metrics.hpp"
#include "comprnn/model.hpp"
#include "comprnn/numkernel.hpp"
#include "comprnn/robustness.hpp"
#include "comprnn/training.hpp"
