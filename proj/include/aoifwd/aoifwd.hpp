#pragma once

#include "backoff.hpp"
#include "config.hpp"
#include "core.hpp"
#include "fib.hpp"
#include "metrics.hpp"
#include "oracle.hpp"
#include "pipeline.hpp"
#include "rcu.hpp"
#include "ring.hpp"
#include "rwlock.hpp"
#include "selftest.hpp"
#include "validation.hpp"
#include "workload.hpp"
