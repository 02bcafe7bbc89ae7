#pragma once

#define SWFLOW_VERSION "0.1.0"
