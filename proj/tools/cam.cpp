// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "cam/cli/app.hpp"

int main(int argc, char** argv) { return cam::cli::run(argc, argv); }
