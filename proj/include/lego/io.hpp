#pragma once

#include "lego/io/trajectory.hpp"
