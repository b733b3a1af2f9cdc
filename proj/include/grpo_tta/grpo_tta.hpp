#pragma once

#include "grpo_tta/ablation.hpp"
#include "grpo_tta/embedding_file.hpp"
#include "grpo_tta/gradcheck.hpp"
#include "grpo_tta/grpo.hpp"
#include "grpo_tta/numerics.hpp"
#include "grpo_tta/pipeline.hpp"
#include "grpo_tta/policy.hpp"
#include "grpo_tta/report.hpp"
#include "grpo_tta/rewards.hpp"
#include "grpo_tta/synthetic.hpp"
