#ifndef CDLMRI_CDLMRI_HPP
#define CDLMRI_CDLMRI_HPP

#include "cdlmri/cdl.hpp"
#include "cdlmri/commands.hpp"
#include "cdlmri/eval.hpp"
#include "cdlmri/image.hpp"
#include "cdlmri/io.hpp"
#include "cdlmri/parallel.hpp"
#include "cdlmri/recon.hpp"
#include "cdlmri/sparse.hpp"
#include "cdlmri/transforms.hpp"

#endif  // CDLMRI_CDLMRI_HPP
