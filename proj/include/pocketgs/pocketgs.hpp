#pragma once

// Everything at once.

#include "pocketgs/core/capture.hpp"
#include "pocketgs/core/gaussian_model.hpp"
#include "pocketgs/core/image_io.hpp"
#include "pocketgs/core/ply.hpp"
#include "pocketgs/eval/metrics.hpp"
#include "pocketgs/framegate.hpp"
#include "pocketgs/init/seed.hpp"
#include "pocketgs/mvs/mvs.hpp"
#include "pocketgs/pipeline.hpp"
#include "pocketgs/sfm/bundle_adjustment.hpp"
#include "pocketgs/synth/ba_scene.hpp"
#include "pocketgs/synth/gaussian_scene.hpp"
#include "pocketgs/synth/textured_scene.hpp"
#include "pocketgs/train/trainer.hpp"
