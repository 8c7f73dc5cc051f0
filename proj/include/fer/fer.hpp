#pragma once

#include "fer/config.hpp"
#include "fer/descriptors.hpp"
#include "fer/error.hpp"
#include "fer/fusion_net.hpp"
#include "fer/harness.hpp"
#include "fer/image.hpp"
#include "fer/image_io.hpp"
#include "fer/landmarks.hpp"
#include "fer/parallel.hpp"
#include "fer/parts.hpp"
#include "fer/pca.hpp"
#include "fer/pipeline.hpp"
#include "fer/stub_encoder.hpp"
#include "fer/svm.hpp"
#include "fer/synth.hpp"
#include "fer/tensor.hpp"
#include "fer/tensor_file.hpp"
