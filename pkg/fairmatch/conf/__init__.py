# Copyright 2024 Fairmatch developers.
# See the top-level LICENSE file for details.
# SPDX-License-Identifier: Apache-2.0
