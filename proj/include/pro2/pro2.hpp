#pragma once

#include "pro2/dataset.hpp"
#include "pro2/error.hpp"
#include "pro2/optim.hpp"
#include "pro2/parallel.hpp"
#include "pro2/probe.hpp"
#include "pro2/project.hpp"
#include "pro2/rng.hpp"
#include "pro2/serialize.hpp"
#include "pro2/shog.hpp"
