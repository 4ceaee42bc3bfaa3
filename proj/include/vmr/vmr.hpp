#pragma once

// Umbrella header.

#include "vmr/common.hpp"
#include "vmr/config.hpp"
#include "vmr/cross_modal.hpp"
#include "vmr/data_io.hpp"
#include "vmr/eval.hpp"
#include "vmr/grad_check.hpp"
#include "vmr/graph.hpp"
#include "vmr/model.hpp"
#include "vmr/moment_head.hpp"
#include "vmr/ops.hpp"
#include "vmr/params.hpp"
#include "vmr/query_encoder.hpp"
#include "vmr/rng.hpp"
#include "vmr/rnn.hpp"
#include "vmr/tensor.hpp"
#include "vmr/train.hpp"
#include "vmr/video_encoder.hpp"
