#ifndef DVSUPPORT_DVSUPPORT_HPP
#define DVSUPPORT_DVSUPPORT_HPP

#include "dvsupport/error.hpp"
#include "dvsupport/log.hpp"
#include "dvsupport/corpus.hpp"
#include "dvsupport/llm_gateway.hpp"
#include "dvsupport/detect.hpp"
#include "dvsupport/embed.hpp"
#include "dvsupport/reduce.hpp"
#include "dvsupport/cluster.hpp"
#include "dvsupport/summarize.hpp"
#include "dvsupport/support.hpp"
#include "dvsupport/evaluate.hpp"

#endif // DVSUPPORT_DVSUPPORT_HPP
