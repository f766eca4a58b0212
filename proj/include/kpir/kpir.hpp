#pragma once

#include "corpus.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "experiments.hpp"
#include "hash.hpp"
#include "index.hpp"
#include "mprank.hpp"
#include "parallel.hpp"
#include "porter.hpp"
#include "ranking.hpp"
#include "stats.hpp"
#include "text.hpp"
