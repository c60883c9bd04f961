#pragma once

// Umbrella header.

#include "s3cl/checkpoint.hpp"
#include "s3cl/config.hpp"
#include "s3cl/error.hpp"
#include "s3cl/eval.hpp"
#include "s3cl/gradcheck.hpp"
#include "s3cl/graph.hpp"
#include "s3cl/io.hpp"
#include "s3cl/matrix.hpp"
#include "s3cl/nn.hpp"
#include "s3cl/objective.hpp"
#include "s3cl/rng.hpp"
#include "s3cl/sbm.hpp"
#include "s3cl/semantic.hpp"
#include "s3cl/structural.hpp"
#include "s3cl/trainer.hpp"
