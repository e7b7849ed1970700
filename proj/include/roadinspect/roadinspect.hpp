#pragma once

#include "roadinspect/error.hpp"
#include "roadinspect/rng.hpp"
#include "roadinspect/tensor.hpp"
#include "roadinspect/imaging.hpp"
#include "roadinspect/layers.hpp"
#include "roadinspect/network.hpp"
#include "roadinspect/losses.hpp"
#include "roadinspect/adam.hpp"
#include "roadinspect/augment.hpp"
#include "roadinspect/classifier.hpp"
#include "roadinspect/detections.hpp"
#include "roadinspect/csv.hpp"
#include "roadinspect/pipeline.hpp"
#include "roadinspect/service.hpp"
