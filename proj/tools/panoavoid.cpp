// Copyright 2026 The panoavoid Authors
// SPDX-License-Identifier: Apache-2.0

#include "panoavoid/cli.hpp"

int main(int argc, char** argv) { return panoavoid::run_cli(argc, argv); }
