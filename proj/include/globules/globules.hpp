#pragma once

#include <globules/core.hpp>
#include <globules/diagnostics.hpp>
#include <globules/dynamics.hpp>
#include <globules/error.hpp>
#include <globules/experiment.hpp>
#include <globules/io.hpp>
#include <globules/penalization.hpp>
#include <globules/rng.hpp>
#include <globules/sampler.hpp>
