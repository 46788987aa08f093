#pragma once

#include "gdcycles/error.hpp"
#include "gdcycles/linalg.hpp"
#include "gdcycles/loss.hpp"
#include "gdcycles/data.hpp"
#include "gdcycles/objective.hpp"
#include "gdcycles/dynamics.hpp"
#include "gdcycles/analysis.hpp"
#include "gdcycles/construct.hpp"
#include "gdcycles/io.hpp"
