// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#include "confbt/cli/cli.hpp"

int main(int argc, char** argv) { return confbt::cli::Main(argc, argv); }
