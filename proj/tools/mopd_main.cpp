// Copyright (c) 2026, MoPD lab contributors
// SPDX-License-Identifier: Apache-2.0

#include "mopd/cli.hpp"

int main(int argc, char** argv) { return mopd::run_cli(argc, argv); }
