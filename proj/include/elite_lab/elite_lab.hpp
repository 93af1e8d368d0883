#ifndef ELITE_LAB_ELITE_LAB_HPP
#define ELITE_LAB_ELITE_LAB_HPP

#include "elite_lab/data.hpp"
#include "elite_lab/diffcore/nn.hpp"
#include "elite_lab/diffcore/ops.hpp"
#include "elite_lab/diffcore/optim.hpp"
#include "elite_lab/diffcore/parallel.hpp"
#include "elite_lab/diffcore/tensor.hpp"
#include "elite_lab/errors.hpp"
#include "elite_lab/eval.hpp"
#include "elite_lab/globalmap.hpp"
#include "elite_lab/image.hpp"
#include "elite_lab/imageenc.hpp"
#include "elite_lab/io/checkpoint.hpp"
#include "elite_lab/io/config.hpp"
#include "elite_lab/io/png.hpp"
#include "elite_lab/ldm/attention.hpp"
#include "elite_lab/ldm/autoencoder.hpp"
#include "elite_lab/ldm/diffusion.hpp"
#include "elite_lab/ldm/schedule.hpp"
#include "elite_lab/ldm/stack.hpp"
#include "elite_lab/ldm/unet.hpp"
#include "elite_lab/localmap/attention.hpp"
#include "elite_lab/localmap/mapper.hpp"
#include "elite_lab/pipeline.hpp"
#include "elite_lab/textenc.hpp"

#endif  // ELITE_LAB_ELITE_LAB_HPP
