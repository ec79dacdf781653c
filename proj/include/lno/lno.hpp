#pragma once

#include "lno/datasets.hpp"
#include "lno/error.hpp"
#include "lno/fourier.hpp"
#include "lno/io.hpp"
#include "lno/laplace.hpp"
#include "lno/model.hpp"
#include "lno/ops.hpp"
#include "lno/parallel.hpp"
#include "lno/presets.hpp"
#include "lno/reproduce.hpp"
#include "lno/rk45.hpp"
#include "lno/tensor.hpp"
#include "lno/training.hpp"
#include "lno/transforms.hpp"

namespace lno {

inline constexpr const char* version = "1.0.0";

}  // namespace lno
