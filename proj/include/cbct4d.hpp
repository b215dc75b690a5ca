#pragma once

#include "cbct4d/acquisition.hpp"
#include "cbct4d/common.hpp"
#include "cbct4d/demons.hpp"
#include "cbct4d/dvf.hpp"
#include "cbct4d/gating.hpp"
#include "cbct4d/geometry.hpp"
#include "cbct4d/io.hpp"
#include "cbct4d/metrics.hpp"
#include "cbct4d/phantom.hpp"
#include "cbct4d/pipeline.hpp"
#include "cbct4d/projector.hpp"
#include "cbct4d/recon.hpp"
#include "cbct4d/refine.hpp"
#include "cbct4d/tv.hpp"
#include "cbct4d/volume.hpp"
