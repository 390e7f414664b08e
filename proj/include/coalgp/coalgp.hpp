#pragma once

#include "coalgp/error.hpp"
#include "coalgp/genealogy.hpp"
#include "coalgp/gp_prior.hpp"
#include "coalgp/io.hpp"
#include "coalgp/likelihood.hpp"
#include "coalgp/mcmc.hpp"
#include "coalgp/random.hpp"
#include "coalgp/simulate.hpp"
#include "coalgp/stats.hpp"
#include "coalgp/summary.hpp"
#include "coalgp/trajectory.hpp"
