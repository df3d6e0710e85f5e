import { ApiClient } from "./api";
import { ChatApp } from "./app";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("server") ?? "";

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app container");

const app = new ChatApp(root, new ApiClient(baseUrl));
void app.init();
