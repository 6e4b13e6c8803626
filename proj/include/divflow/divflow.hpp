#pragma once

#include "divflow/error.hpp"
#include "divflow/core.hpp"
#include "divflow/flows.hpp"
#include "divflow/measures.hpp"
#include "divflow/whitney.hpp"
#include "divflow/norms.hpp"
#include "divflow/io.hpp"
