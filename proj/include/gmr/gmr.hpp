#pragma once

#include "gmr/box_qp.hpp"
#include "gmr/bvh.hpp"
#include "gmr/errors.hpp"
#include "gmr/ik_solver.hpp"
#include "gmr/kinematics.hpp"
#include "gmr/motion_file.hpp"
#include "gmr/quality.hpp"
#include "gmr/retarget.hpp"
#include "gmr/robot_model.hpp"
#include "gmr/so3.hpp"
#include "gmr/version.hpp"
