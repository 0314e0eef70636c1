#ifndef RESSAM_RESSAM_HPP
#define RESSAM_RESSAM_HPP

#include "ressam/frame.hpp"
#include "ressam/rng.hpp"
#include "ressam/parallel.hpp"
#include "ressam/io.hpp"
#include "ressam/preprocess.hpp"
#include "ressam/synth.hpp"
#include "ressam/reservoir.hpp"
#include "ressam/bank.hpp"
#include "ressam/segmenter.hpp"
#include "ressam/detector.hpp"
#include "ressam/categorizer.hpp"
#include "ressam/eval.hpp"
#include "ressam/dataset.hpp"
#include "ressam/report.hpp"
#include "ressam/service.hpp"

#endif
