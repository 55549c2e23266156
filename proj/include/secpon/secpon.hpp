#pragma once

#include "secpon/bits.hpp"
#include "secpon/channel.hpp"
#include "secpon/cpr.hpp"
#include "secpon/crypto.hpp"
#include "secpon/dscm.hpp"
#include "secpon/experiments.hpp"
#include "secpon/framing.hpp"
#include "secpon/ldpc.hpp"
#include "secpon/polar.hpp"
#include "secpon/protocol.hpp"
#include "secpon/rng.hpp"
#include "secpon/theory.hpp"
