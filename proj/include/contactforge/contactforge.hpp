#pragma once

#include "contactforge/core.hpp"
#include "contactforge/dataset.hpp"
#include "contactforge/labeling.hpp"
#include "contactforge/losses.hpp"
#include "contactforge/mesh.hpp"
#include "contactforge/sampling.hpp"
#include "contactforge/train.hpp"
