#pragma once

#include "difficalib/classifier.hpp"
#include "difficalib/dataset.hpp"
#include "difficalib/difficulty.hpp"
#include "difficalib/error.hpp"
#include "difficalib/gaussian.hpp"
#include "difficalib/metrics.hpp"
#include "difficalib/synthetic.hpp"
#include "difficalib/threads.hpp"
