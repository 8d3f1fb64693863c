#pragma once

#include "attobeat/analysis.hpp"
#include "attobeat/error.hpp"
#include "attobeat/io.hpp"
#include "attobeat/molecule.hpp"
#include "attobeat/optics.hpp"
#include "attobeat/pipeline.hpp"
#include "attobeat/probe.hpp"
#include "attobeat/quantum.hpp"
#include "attobeat/rng.hpp"
#include "attobeat/scenario.hpp"
#include "attobeat/stab.hpp"
#include "attobeat/units.hpp"
#include "attobeat/vmi.hpp"
