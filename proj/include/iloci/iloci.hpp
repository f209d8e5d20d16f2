#pragma once

#include "binary_io.hpp"
#include "clustering.hpp"
#include "concept_engine.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "kinematics.hpp"
#include "memory.hpp"
#include "report.hpp"
#include "rnnpb.hpp"
#include "teacher.hpp"
