#pragma once

#include "lego/marl/trainer.hpp"
