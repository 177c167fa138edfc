#pragma once

// Umbrella header for the whole library.

#include "pdewb/errors.hpp"
#include "pdewb/rng.hpp"
#include "pdewb/grid.hpp"
#include "pdewb/fft.hpp"
#include "pdewb/spectral.hpp"
#include "pdewb/pde.hpp"
#include "pdewb/darcy.hpp"
#include "pdewb/parallel.hpp"
#include "pdewb/data.hpp"
#include "pdewb/binary_io.hpp"
#include "pdewb/dataset_io.hpp"
#include "pdewb/fno.hpp"
#include "pdewb/channels.hpp"
#include "pdewb/checkpoint.hpp"
#include "pdewb/losses.hpp"
#include "pdewb/optim.hpp"
#include "pdewb/trainer.hpp"
#include "pdewb/metrics.hpp"
#include "pdewb/report.hpp"
#include "pdewb/experiment.hpp"
