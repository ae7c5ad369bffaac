import { ApiClient } from "./api";
import { mountExplorer } from "./dom";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8321";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
mountExplorer(root, new ApiClient(base));
