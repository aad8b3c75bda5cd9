#pragma once

#include "exmatrix/dataset.hpp"
#include "exmatrix/error.hpp"
#include "exmatrix/explanations.hpp"
#include "exmatrix/forest.hpp"
#include "exmatrix/forest_json.hpp"
#include "exmatrix/numeric.hpp"
#include "exmatrix/ordering.hpp"
#include "exmatrix/queries.hpp"
#include "exmatrix/rules.hpp"
#include "exmatrix/svg.hpp"
#include "exmatrix/trainer.hpp"
#include "exmatrix/view.hpp"
#include "exmatrix/view_json.hpp"
