#pragma once

//! Umbrella header.

#include "config.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "kernel.hpp"
#include "linking.hpp"
#include "metrics.hpp"
#include "particles.hpp"
#include "path_measure.hpp"
#include "sampling.hpp"
#include "testcase.hpp"
