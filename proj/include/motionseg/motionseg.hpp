#pragma once

#include "motionseg/common.hpp"
#include "motionseg/geometry.hpp"
#include "motionseg/spatial_index.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/scene.hpp"
#include "motionseg/sequence_io.hpp"
#include "motionseg/preprocess.hpp"
#include "motionseg/graph.hpp"
#include "motionseg/mpn.hpp"
#include "motionseg/cluster.hpp"
#include "motionseg/boxes.hpp"
#include "motionseg/baselines.hpp"
#include "motionseg/eval.hpp"
#include "motionseg/config.hpp"
#include "motionseg/pipeline.hpp"
