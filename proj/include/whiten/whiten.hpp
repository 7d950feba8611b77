#pragma once

#include "whiten/core.hpp"
#include "whiten/parallel.hpp"
#include "whiten/spectrum.hpp"
#include "whiten/filterdesign.hpp"
#include "whiten/flow.hpp"
#include "whiten/pipeline.hpp"
#include "whiten/scenegen.hpp"
#include "whiten/metrics.hpp"
#include "whiten/io.hpp"
#include "whiten/bench.hpp"
