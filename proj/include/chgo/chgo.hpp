#pragma once

#include "chgo/archive.hpp"
#include "chgo/binomial.hpp"
#include "chgo/chunkstore.hpp"
#include "chgo/encoder.hpp"
#include "chgo/errors.hpp"
#include "chgo/goboard.hpp"
#include "chgo/log.hpp"
#include "chgo/policynet.hpp"
#include "chgo/rng.hpp"
#include "chgo/selfplay.hpp"
#include "chgo/sgf.hpp"
#include "chgo/synthetic.hpp"
#include "chgo/types.hpp"
#include "chgo/zobrist.hpp"
