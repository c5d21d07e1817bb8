#pragma once

#include "blocking_queue.hpp"
#include "codecs.hpp"
#include "collective.hpp"
#include "count_sketch.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "hash.hpp"
#include "heavy_mix.hpp"
#include "objectives.hpp"
#include "sparse_gradient.hpp"
#include "tcp_transport.hpp"
#include "traffic_estimate.hpp"
#include "trainer.hpp"
#include "transport.hpp"
#include "verify.hpp"
#include "wire.hpp"
