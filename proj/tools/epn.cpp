// Copyright 2026 The EPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "epn/cli.hpp"

int main(int argc, char** argv) { return epn::run(argc, argv); }
