#pragma once

#include "heatinv/common.hpp"
#include "heatinv/binary_io.hpp"
#include "heatinv/parallel.hpp"
#include "heatinv/geometry.hpp"
#include "heatinv/materials.hpp"
#include "heatinv/flux.hpp"
#include "heatinv/sparse.hpp"
#include "heatinv/fem.hpp"
#include "heatinv/datagen.hpp"
#include "heatinv/nn_ops.hpp"
#include "heatinv/convlstm.hpp"
#include "heatinv/lstm.hpp"
#include "heatinv/network.hpp"
#include "heatinv/gradcheck.hpp"
#include "heatinv/normalizer.hpp"
#include "heatinv/checkpoint.hpp"
#include "heatinv/training.hpp"
#include "heatinv/evaluation.hpp"
#include "heatinv/verify.hpp"
