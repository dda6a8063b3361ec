#pragma once

#include "lego/eval/protocols.hpp"
