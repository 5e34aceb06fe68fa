#ifndef SSMTL_SSMTL_HPP
#define SSMTL_SSMTL_HPP

#include "ssmtl/augmentation.hpp"
#include "ssmtl/checkpoint.hpp"
#include "ssmtl/config.hpp"
#include "ssmtl/core.hpp"
#include "ssmtl/data_model.hpp"
#include "ssmtl/image.hpp"
#include "ssmtl/losses.hpp"
#include "ssmtl/metrics.hpp"
#include "ssmtl/network.hpp"
#include "ssmtl/pseudo_label.hpp"
#include "ssmtl/records.hpp"
#include "ssmtl/trainer.hpp"

#endif  // SSMTL_SSMTL_HPP
