#pragma once

// Convenience umbrella for the whole library.

#include "svdq/bitpack.hpp"
#include "svdq/errmodel.hpp"
#include "svdq/error.hpp"
#include "svdq/harness.hpp"
#include "svdq/io.hpp"
#include "svdq/keycore.hpp"
#include "svdq/pipeline.hpp"
#include "svdq/quant.hpp"
#include "svdq/sparsity.hpp"
#include "svdq/types.hpp"
