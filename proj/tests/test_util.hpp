#pragma once

#include <gtest/gtest.h>

#include "instances.hpp"
