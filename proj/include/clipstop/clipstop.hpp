#ifndef CLIPSTOP_CLIPSTOP_HPP
#define CLIPSTOP_CLIPSTOP_HPP

#include "clipstop/errors.hpp"
#include "clipstop/rng.hpp"
#include "clipstop/data_model.hpp"
#include "clipstop/nn.hpp"
#include "clipstop/agent_nets.hpp"
#include "clipstop/episode_env.hpp"
#include "clipstop/serialize.hpp"
#include "clipstop/ppo.hpp"
#include "clipstop/checkpoint.hpp"
#include "clipstop/eval.hpp"
#include "clipstop/config.hpp"

#endif  // CLIPSTOP_CLIPSTOP_HPP
