#pragma once

#include "hybridtree/baselines.hpp"
#include "hybridtree/cart.hpp"
#include "hybridtree/dataframe.hpp"
#include "hybridtree/elastic_net.hpp"
#include "hybridtree/errors.hpp"
#include "hybridtree/eval.hpp"
#include "hybridtree/hybrid.hpp"
#include "hybridtree/log.hpp"
#include "hybridtree/simgen.hpp"
#include "hybridtree/version.hpp"
