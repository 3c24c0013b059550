#pragma once

#include "idprobe/error.hpp"
#include "idprobe/knn.hpp"
#include "idprobe/pipeline.hpp"
#include "idprobe/profile.hpp"
#include "idprobe/report.hpp"
#include "idprobe/stats.hpp"
#include "idprobe/synth.hpp"
#include "idprobe/tensor_io.hpp"
#include "idprobe/twonn.hpp"
